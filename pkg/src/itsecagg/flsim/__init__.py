"""Desk-scale federated learning: data, models, plaintext aggregators and
the training loop (:mod:`itsecagg.flsim.training`)."""
