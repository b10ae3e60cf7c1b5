import sys

from nimo.cli import main

if __name__ == "__main__":
    sys.exit(main())
