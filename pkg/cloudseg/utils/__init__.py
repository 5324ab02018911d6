"""Cross-cutting helpers: configuration, logging, profiling, validation, constants."""
