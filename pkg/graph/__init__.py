# Graph Construction Module
# Cell-list neighbor search + weighted graphs and Laplacians
