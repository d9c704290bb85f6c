"""JSON schema of the reports the CLI writes."""
