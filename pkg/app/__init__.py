# SOP Spline
