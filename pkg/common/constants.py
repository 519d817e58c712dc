"""Shared constants for the project modules."""

# Output files written by the solve / levelsets commands
U_FILENAME = "u.csv"
Z_STEM = "z"
Z_X_FILENAME = "z_x.csv"
Z_Y_FILENAME = "z_y.csv"
REPORT_FILENAME = "report.txt"
PGM_FILENAME = "u.pgm"
LEVELSETS_FILENAME = "levelsets.csv"

# Keys of the flat key=value reports
REPORT_SCENARIO = "scenario"
REPORT_N = "n"
REPORT_ANISOTROPY = "anisotropy"
REPORT_PRIMAL = "primal"
REPORT_DUAL = "dual"
REPORT_GAP = "gap"
REPORT_RELATIVE_GAP = "relative_gap"
REPORT_CONVERGED = "converged"
REPORT_ITERS_USED = "iters_used"
REPORT_PASS = "pass"

# Face direction labels, in the order faces are enumerated within a cell
DIRECTIONS = ("+x", "-x", "+y", "-y")
