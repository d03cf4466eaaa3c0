"""sEMG posture classification and multi-day repeatability experiments."""
