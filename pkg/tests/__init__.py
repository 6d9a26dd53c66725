# Tests for sqpe-estimators
