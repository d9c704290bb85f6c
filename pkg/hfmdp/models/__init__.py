"""Model files shipped with hfmdp; load them with generators.bundled_model(name)."""
