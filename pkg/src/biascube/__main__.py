import sys

from biascube.cli import main

sys.exit(main())
