"""MDP, policy and proxy-set types plus their text formats."""
