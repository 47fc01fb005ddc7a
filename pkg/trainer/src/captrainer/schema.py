"""The CAP major-topic code list and the trainer's error taxonomy.

The annotation pipeline this trainer pairs with uses the 22 Comparative
Agendas Project major topics; codes 11 and 22 are unassigned in that
scheme and 0 is the residual "Other" class. Only the codes matter here,
so the list is kept inline rather than shared with the pipeline package.
"""

CAP_CODES = frozenset(
    {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 23, 0}
)

DO_NOT_KNOW = "DNK"


class TrainerError(Exception):
    """Base class for everything this package raises on purpose."""


class LabelOutsideSchema(TrainerError):
    def __init__(self, code, where: str):
        super().__init__(f"label code {code!r} in {where} is not a CAP major topic")
        self.code = code


class EmptyTrainingSet(TrainerError):
    pass


class IOFailure(TrainerError):
    pass


class ModelUnavailable(TrainerError):
    pass
