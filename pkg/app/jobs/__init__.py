"""Command-line jobs: one module per subcommand plus the shared entrypoint."""
