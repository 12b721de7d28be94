from .world import (DT, GRAVITY, ContactPoint, World, detect_contacts, step,
                    quat_from_yaw, quat_rotate, quat_rotate_inv, quat_to_euler)

__all__ = ["DT", "GRAVITY", "ContactPoint", "World", "detect_contacts", "step",
           "quat_from_yaw", "quat_rotate", "quat_rotate_inv", "quat_to_euler"]
