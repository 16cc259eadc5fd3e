import sys

from regionalized.cli import main

sys.exit(main())
