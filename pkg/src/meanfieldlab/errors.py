"""Exception types shared across the lab."""


class ValidationError(ValueError):
    """Bad user input: configs, model parameters, measure shapes."""


class DivergenceError(RuntimeError):
    """A simulated state became non-finite.

    Carries enough context to locate the blow-up.
    """

    def __init__(self, step: int, particle: int | None = None, detail: str = ""):
        self.step = step
        self.particle = particle
        where = f"step {step}" + (f", particle {particle}" if particle is not None else "")
        super().__init__(f"non-finite state at {where}" + (f" ({detail})" if detail else ""))
