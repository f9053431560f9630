# API Routers Module
# Experiment and kernel routers
