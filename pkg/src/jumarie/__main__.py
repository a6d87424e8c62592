import sys

from jumarie.cli import main

sys.exit(main())
