# dpmn/errors.py
'''Root of the package's exception hierarchy'''


class DPMNError(Exception):
    """Base class for every error raised by the dpmn package."""
