import sys

from rnnfilter.cli import main

sys.exit(main())
