import sys

from render_harness.runner import main

sys.exit(main())
