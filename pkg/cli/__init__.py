# Command Line Module
# argparse entry points for the laboratory
