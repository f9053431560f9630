# Observers Module
# Stage latencies, counters and runtime budgets
