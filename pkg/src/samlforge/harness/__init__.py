"""Flow-testing harness: CLI, in-process scenario simulator, HTTP service."""
