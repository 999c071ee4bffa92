# Curve Restriction Workbench
