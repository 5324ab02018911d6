"""``python cloudseg/main.py ...`` from a source checkout."""
if __name__ == "__main__" and __package__ is None:
    import os
    import sys
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cloudseg.cli.main import main

if __name__ == "__main__":
    main()
