import sys

from icurisk.cli import main

sys.exit(main())
