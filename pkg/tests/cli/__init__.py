# CLI tests package
