"""Entry point for python -m jointseg."""

from .main import main

if __name__ == "__main__":
    main()
