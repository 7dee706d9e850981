"""HTTP layer: stateless scenario-in, report-out endpoints."""
