# Experiment tests package
