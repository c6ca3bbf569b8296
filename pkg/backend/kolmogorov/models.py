import uuid6
from django.db import models


class BaseModel(models.Model):
    """
    共通フィールドを持つ抽象ベースモデル
    IDをUUID7化し、作成・更新日時や論理削除フラグを自動管理します。
    """

    # IDをUUID7にする (時系列ソート可能かつユニーク)
    id = models.UUIDField(primary_key=True, default=uuid6.uuid7, editable=False)

    is_active = models.BooleanField("有効フラグ", default=True, help_text="Falseなら非表示")
    is_deleted = models.BooleanField("論理削除フラグ", default=False)

    created_at = models.DateTimeField("作成日時", auto_now_add=True, db_index=True)
    updated_at = models.DateTimeField("更新日時", auto_now=True)

    class Meta:
        abstract = True


class ScenarioRun(BaseModel):
    """
    シナリオ実行ログ。
    開始時に RUNNING で作成し、終了時に SUCCESS / VIOLATED / FAILURE に更新する。
    """

    STATUS_CHOICES = (
        ("RUNNING", "Running"),
        ("SUCCESS", "Success"),
        ("VIOLATED", "Violated"),
        ("FAILURE", "Failure"),
    )

    name = models.CharField("シナリオ名", max_length=100, db_index=True)
    task = models.CharField("タスク", max_length=20)
    seed = models.BigIntegerField("乱数シード", default=0)
    status = models.CharField("ステータス", max_length=10, choices=STATUS_CHOICES)
    output_dir = models.CharField("出力先", max_length=500)
    report_sha256 = models.CharField("report.json の SHA-256", max_length=64, blank=True, null=True)
    report = models.JSONField("report.json の内容", blank=True, null=True)
    message = models.TextField("ログ詳細", blank=True, null=True)
    error_detail = models.JSONField("エラー詳細JSON", blank=True, null=True)

    class Meta:
        ordering = ["-created_at"]
        indexes = [
            models.Index(fields=["name", "-created_at"]),
            models.Index(fields=["created_at", "status"]),
        ]

    def __str__(self):
        return f"{self.name} [{self.task}] - {self.status} at {self.created_at}"
