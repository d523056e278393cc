import sys

from app.backend.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
