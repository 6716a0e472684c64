"""Command-line subcommands for the BGN engine"""
