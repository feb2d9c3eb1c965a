from candida_screen.infrastructure.runtime import get_device, make_generator, make_loader, seed_everything

__all__ = ["get_device", "make_generator", "make_loader", "seed_everything"]
