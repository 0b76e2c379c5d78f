"""Entry point for ``python -m intentgames``."""

from .cli import main


if __name__ == '__main__':
    main()
