"""Safe episodic TD(0) learners, learning-rate schedules and run traces."""
