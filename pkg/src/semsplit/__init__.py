"""Semantic-splitting multiple access simulator and PPO optimiser."""
