class InvalidParameterError(ValueError):
    pass


class DegenerateDataError(ValueError):
    pass


class InvalidStateError(IndexError):
    pass


class InvalidInputError(ValueError):
    pass
