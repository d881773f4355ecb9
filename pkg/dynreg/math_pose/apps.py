from django.apps import AppConfig


class MathPoseConfig(AppConfig):
    name = "math_pose"
    verbose_name = "Rotation and forward-kinematics algebra"
