# Tests package for the network bound calculators
