"""Configuration management for penaltyselect."""
