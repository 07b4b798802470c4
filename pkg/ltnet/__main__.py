import sys

from ltnet.cli import main

sys.exit(main())
