"""Step-decay learning-rate schedule."""

from dataclasses import dataclass

from ..exceptions import InvalidInputError


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 400
    base_lr: float = 0.001
    decay_factor: float = 10.0
    decay_period_epochs: int = 120
    batch_size: int = 32
    margin: float = 0.2

    def validate(self):
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if not self.base_lr > 0:
            raise InvalidInputError("base_lr must be > 0")
        if not self.decay_factor > 1:
            raise InvalidInputError("decay_factor must be > 1")
        if self.decay_period_epochs < 1:
            raise InvalidInputError("decay_period_epochs must be >= 1")
        if not self.margin > 0:
            raise InvalidInputError("margin must be > 0")
        return self

    def learning_rate(self, epoch):
        # divide (not multiply by 0.1) so that 1e-3 / 10**k hits the decimal literals
        return self.base_lr / self.decay_factor ** (epoch // self.decay_period_epochs)

    def trace(self):
        return [self.learning_rate(e) for e in range(self.epochs)]
