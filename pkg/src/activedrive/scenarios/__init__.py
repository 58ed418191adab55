"""Driving scenarios: occluded pedestrian and visual time-sharing."""
