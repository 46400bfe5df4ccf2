import sys

from cprd.experiments.cli import main

sys.exit(main())
