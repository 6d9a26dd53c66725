import sys

from dotenv import load_dotenv

from experiments.cli import main

# Load environment variables
load_dotenv()

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
