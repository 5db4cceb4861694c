import sys

from fedpake.cli import main

sys.exit(main())
