# Test Suite for the Spectral Clustering Laboratory
