"""Shared base class for the project's management commands."""

import logging

from django.core.management.base import BaseCommand

from .exceptions import command_error

logger = logging.getLogger(__name__)


class RunCommand(BaseCommand):
    """
    Management command whose failures map onto the stable exit codes
    (0 success, 2 usage/config error, 3 runtime failure).

    Subclasses implement ``run`` instead of ``handle``.
    """

    def add_arguments(self, parser):
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Seed for every random stream used by the command",
        )

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except Exception as exc:
            raise command_error(exc) from exc

    def run(self, **options):
        raise NotImplementedError

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warn(self, message):
        self.stdout.write(self.style.WARNING(message))
