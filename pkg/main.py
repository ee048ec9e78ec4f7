# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import sys
from LabelForge.cli import main

if __name__ == "__main__":
    sys.exit(main())
