"""Process simulators with fault catalogs."""
