#!/usr/bin/env python3
"""Test Enhancer - Entry point."""

from testenhance.cli.harness import main


if __name__ == "__main__":
    main()
