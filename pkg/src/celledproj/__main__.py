import sys

from celledproj.cli import main

sys.exit(main())
