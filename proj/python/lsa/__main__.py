import os
import subprocess
import sys


def main():
    """Forwards to the bundled command-line tool."""
    exe = os.path.join(os.path.dirname(__file__), "bin", "lsa")
    return subprocess.call([exe, *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(main())
