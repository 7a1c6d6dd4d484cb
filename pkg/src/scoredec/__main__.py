import sys

from scoredec.cli import main

sys.exit(main())
