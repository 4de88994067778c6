import sys

from dpmn.main import main

sys.exit(main())
