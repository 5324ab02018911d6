"""``python -m cloudseg``."""
from cloudseg.cli.main import main

main()
