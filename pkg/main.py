"""
Command-line entry point: python main.py {train,infer,eval,analyze} ...
"""

import sys

from promptlight.cli import main

if __name__ == "__main__":
    sys.exit(main())
