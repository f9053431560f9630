# Numerical Services Module
# Eigensolver, weighted k-means, optimal transport and continuum spectra
