import sys

from forestlens.cli import main

sys.exit(main())
