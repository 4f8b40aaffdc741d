from django.core.exceptions import ImproperlyConfigured
from django.utils.module_loading import import_string

ENVS = {
    'pendulum': 'cail.envs.pendulum.PixelPendulum',
    'cartpole': 'cail.envs.cartpole.PixelCartPole',
}


def get_env_class(name):
    try:
        path = ENVS[name]
    except KeyError:
        raise ImproperlyConfigured(
            "Unknown env '{}'. Choose one of: {}".format(name, ', '.join(sorted(ENVS)))
        )
    return import_string(path)


def make_env(name, **settings):
    return get_env_class(name)(**settings)
