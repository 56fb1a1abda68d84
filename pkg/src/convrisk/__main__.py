"""Allow `python -m convrisk` as an alternative to the console script."""

from .cli import main

main()
