"""Entry point, same as the `avse` console script."""

import sys

from source.cli import main

if __name__ == '__main__':
    sys.exit(main())
