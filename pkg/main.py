#!/usr/bin/env python3
"""
Corpus Automator - Main Entry Point
Checks dependencies, installs a global exception hook and dispatches to the CLI.
"""

import logging
import sys

from corpus_automator import __version__


def check_dependencies():
    """Check for required dependencies before running any stage."""
    missing_deps = []
    for module, package in (("numpy", "numpy"), ("scipy", "scipy"), ("sklearn", "scikit-learn"),
                            ("soundfile", "soundfile"), ("num2words", "num2words"),
                            ("Levenshtein", "Levenshtein"), ("tqdm", "tqdm"), ("PIL", "Pillow"),
                            ("pytz", "pytz")):
        try:
            __import__(module)
        except ImportError:
            missing_deps.append(package)

    if missing_deps:
        print(f"Missing required dependencies: {', '.join(missing_deps)}\n\n"
              f"Please install them using:\npip install {' '.join(missing_deps)}", file=sys.stderr)
        sys.exit(1)


def setup_exception_handling():
    """Log uncaught exceptions with their traceback and print a short message."""
    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return
        logging.getLogger("corpus_automator").error(
            "Uncaught exception", exc_info=(exc_type, exc_value, exc_traceback))
        print(f"An unexpected error occurred: {exc_type.__name__}: {exc_value}\n"
              "Full traceback has been logged to the run logs.", file=sys.stderr)

    sys.excepthook = handle_exception


def main():
    check_dependencies()
    setup_exception_handling()

    from corpus_automator.cli import main as cli_main

    try:
        sys.exit(cli_main())
    except KeyboardInterrupt:
        print(f"\nCorpus Automator v{__version__} interrupted by user", file=sys.stderr)
        sys.exit(130)


if __name__ == "__main__":
    main()
