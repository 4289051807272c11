"""qdeloc Exceptions module.

This module defines the base types for toolkit-wide errors. The `code` of
every error is the exit code the command line surface reports for it.

"""

from typing import Any, Dict, Union

INPUT_ERROR = 1
INTERNAL_ERROR = 2


class QDelocError(Exception):
    """Base class for all errors raised by qdeloc.
    Callers can simply catch this class and inspect its `code` to
    implement more specific error handling. Note that for some client-side
    errors ie: a tolerance outside (0, 1), a ValueError would be raised.

    Absence of a controlled-unitary form is a verdict, not an error: the
    detector returns None instead of raising.

    Args:
        code: The exit code attributed to that Error (1 input, 2 internal).
        message: A human-readable error message string.
        suggested_action: A suggested action path to help the user.
        err: Extra structured context, e.g. a deviation norm.
    """

    def __init__(
        self,
        code: Union[str, int],
        message: str,
        suggested_action: str,
        err: Union[str, Dict[str, Any], None] = None,
    ):
        Exception.__init__(self, message)
        self.code = int(code)
        self.message = message
        self.suggested_action = suggested_action
        self.error = err


class ValidationError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INPUT_ERROR,
    ):
        suggested_action = """Check the dimensions and the defining property
        (unitarity, hermiticity, normalization) of the offending input."""

        if message == "":
            message = "The input failed validation."

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )


class MalformedProtocolError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INPUT_ERROR,
    ):
        suggested_action = """Every node needs a complete measurement on its
        party and one child per outcome label 0..n-1; corrections belong on leaves."""

        if message == "":
            message = "The LOCC protocol is malformed."

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )


class MalformedFormError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INPUT_ERROR,
    ):
        suggested_action = """Blocks must carry mutually orthogonal projectors
        summing to the identity and unitary target operators."""

        if message == "":
            message = "The controlled-unitary form is malformed."

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )


class NonCommutingFamilyError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INPUT_ERROR,
    ):
        suggested_action = """Only commuting Hermitian families share an
        eigenbasis; inspect the reported commutator norm."""

        if message == "":
            message = "The family is not jointly diagonalizable."

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )


class NotControlledError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INPUT_ERROR,
    ):
        suggested_action = """Run classify to see on which side, if any, the
        gate is controlled."""

        if message == "":
            message = "not a local unitary equivalent of a controlled-unitary"

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )


class ApplicationError(QDelocError):
    def __init__(
        self,
        message: str,
        err: Union[str, Dict[str, Any], None] = None,
        code: Union[str, int] = INTERNAL_ERROR,
    ):
        default_message = """
        Something went wrong."""

        suggested_action = """Report the input that triggered this error."""

        if message == "":
            message = default_message

        QDelocError.__init__(
            self,
            code=code,
            message=message,
            suggested_action=suggested_action,
            err=err,
        )
