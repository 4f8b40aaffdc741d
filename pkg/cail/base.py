from django.core.exceptions import ImproperlyConfigured


class Configurable:
    """
    Base for components whose knobs come from keyword arguments, falling back
    to ``CAIL_*`` Django settings and then to hard defaults.

    Subclasses return their defaults from ``get_default_settings``. A class
    attribute of the same name takes precedence over the default.
    """

    def __init__(self, **settings):
        defaults = self.get_default_settings()
        unknown = sorted(set(settings) - set(defaults))
        if unknown:
            raise ImproperlyConfigured(
                "Invalid setting '{}' for {}".format(unknown[0], self.__class__.__name__)
            )
        for name, value in defaults.items():
            if name in settings:
                value = settings[name]
            elif hasattr(self, name):
                continue
            setattr(self, name, value)

    def get_default_settings(self):
        return {}

    def get_settings(self):
        """Resolved settings, in declaration order."""
        return {name: getattr(self, name) for name in self.get_default_settings()}
