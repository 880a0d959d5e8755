"""Constants, configuration, logging and random streams."""
