import sys
from ebqkd.cli import main
sys.exit(main())
