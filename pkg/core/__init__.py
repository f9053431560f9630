# Core Laboratory Module
# Errors, configuration, measures, kernels, pipeline and reports
