from django.apps import AppConfig


class CailConfig(AppConfig):
    name = 'cail'
    verbose_name = 'Contrastive adversarial imitation learning'
