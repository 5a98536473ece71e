"""File formats: PDB, synthetic linkage files, constraint lists."""
