#!/usr/bin/env python3
"""
Главный файл Invariance Lab.
Запуск подкоманд: spectral, variance, partition, mixing, couple, rates.
"""

import sys


def main():
    from invariance_lab.cli.interface import main as cli_main
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
