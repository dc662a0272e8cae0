"""Shared record of acceptance verdicts, printed in the terminal summary."""

RESULTS: list[tuple[str, bool, str]] = []
