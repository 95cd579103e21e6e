"""Semi-static hedging and pricing of guaranteed minimum withdrawal benefits."""
