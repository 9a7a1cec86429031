"""Entry point for PyInstaller builds of the ClusterPCA command line."""
from clusterpca.main import main

if __name__ == "__main__":
    main()
